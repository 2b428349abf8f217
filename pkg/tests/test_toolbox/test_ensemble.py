import math
from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import k as k_B
from scipy.constants import m_e

from phonontide.toolbox.collision import Geometry
from phonontide.toolbox.ensemble import (REASONS, EnsembleState, EventLog,
                                         EventReason, LinkBalance, entropy,
                                         entropy_trend, fermi_energy,
                                         link_balances, relax, run_trials,
                                         simulate, step, step_draws,
                                         trial_seeds, window_edges)
from phonontide.toolbox.lattice import BathSpec, PhononPacket

UPSILON = 5000.0


def make_packet(vbar0: float = 2.0, upsilon: float = UPSILON) -> PhononPacket:
    return PhononPacket(vbar0=vbar0, upsilon=upsilon, a=3e-10, k_max=np.pi / 3e-10)


def make_bath(temperature: float) -> BathSpec:
    return BathSpec(temperature=temperature, omega_d=1e13, upsilon=UPSILON)


class TestEnsembleState(TestCase):
    def test_ground_state(self):
        state = EnsembleState.create(n_levels=10, n_electrons=5, upsilon=UPSILON)

        self.assertEqual(state.n_electrons, 5)
        self.assertEqual(int(state.occupancy.sum()), 5)
        self.assertTrue(state.occupancy[0, 0] and state.occupancy[0, 1])
        self.assertTrue(state.occupancy[2, 0])
        self.assertFalse(state.occupancy[2, 1])

    def test_ladder(self):
        state = EnsembleState.create(n_levels=4, n_electrons=1, upsilon=UPSILON)
        np.testing.assert_array_equal(state.velocities, [5000.0, 15000.0, 25000.0, 35000.0])
        np.testing.assert_allclose(np.diff(state.velocities), 2 * UPSILON)
        self.assertEqual(state.nearest_level(-25000.0), 2)

    def test_rejects_double_occupancy(self):
        with self.assertRaises(ValueError):
            EnsembleState.create(
                n_levels=4, n_electrons=2, upsilon=UPSILON, occupied=[(1, 0), (1, 0)]
            )

    def test_rejects_overfull_ladder(self):
        with self.assertRaises(ValueError):
            EnsembleState.create(n_levels=4, n_electrons=9, upsilon=UPSILON)

    def test_fermi_energy(self):
        state = EnsembleState.create(n_levels=200, n_electrons=50, upsilon=UPSILON)
        expected = 0.5 * m_e * UPSILON**2 * (49**2 + 51**2) / 2
        self.assertTrue(math.isclose(fermi_energy(state.energies, 50, 2), expected, rel_tol=1e-12))
        self.assertEqual(fermi_energy(state.energies, 49, 2), state.energies[24])


class TestStep(TestCase):
    def test_zero_amplitude_packet(self):
        state = EnsembleState.create(n_levels=20, n_electrons=10, upsilon=UPSILON)
        packet = make_packet(vbar0=0.0)
        bath = make_bath(0.0)

        initial = state.occupancy.copy()
        for _ in range(200):
            state, event = step(state, bath, packet)
            self.assertIn(event.reason, (EventReason.PASS_NO_EXCHANGE, EventReason.NO_COLLISION))
            self.assertFalse(event.accepted)

        np.testing.assert_array_equal(state.occupancy, initial)
        self.assertEqual(state.step_count, 200)

    def test_head_on_rebound_energy_gain(self):
        state = EnsembleState.create(
            n_levels=10, n_electrons=1, upsilon=UPSILON, spin_channels=1, occupied=[(3, 0)]
        )
        packet = make_packet()
        bath = make_bath(1e4)

        for _ in range(1000):
            energy_before = state.total_energy
            velocity = state.velocities[state.electrons[0, 0]]
            state, event = step(state, bath, packet)

            if event.accepted and event.geometry == Geometry.HEAD_ON:
                expected = 0.5 * m_e * ((velocity + 2 * UPSILON) ** 2 - velocity**2)
                self.assertTrue(
                    math.isclose(state.total_energy - energy_before, expected, rel_tol=1e-9)
                )
                self.assertEqual(event.level_out, event.level_in + 1)
                break
        else:
            self.fail("No accepted head-on rebound within 1000 steps")

    def test_pauli_blocking(self):
        state = EnsembleState.create(
            n_levels=10, n_electrons=2, upsilon=UPSILON, spin_channels=1, occupied=[(3, 0), (4, 0)]
        )
        packet = make_packet()
        bath = make_bath(1e4)

        for _ in range(1000):
            new_state, event = step(state, bath, packet)

            if event.reason == EventReason.PAULI_BLOCKED:
                np.testing.assert_array_equal(new_state.occupancy, state.occupancy)
                np.testing.assert_array_equal(new_state.electrons, state.electrons)
                self.assertEqual(event.level_out, event.level_in)
                break

            state = new_state
        else:
            self.fail("No Pauli blocked event within 1000 steps")

    def test_rebound_lands_in_either_spin_slot(self):
        state = EnsembleState.create(n_levels=10, n_electrons=1, upsilon=UPSILON, occupied=[(3, 0)])
        packet = make_packet()
        bath = make_bath(1e4)
        spins = set()

        for _ in range(1000):
            state, event = step(state, bath, packet)
            if event.accepted:
                spins.add(int(state.electrons[0, 1]))

        self.assertEqual(spins, {0, 1})

    def test_full_level_blocks_both_spins(self):
        state = EnsembleState.create(
            n_levels=10, n_electrons=3, upsilon=UPSILON, occupied=[(3, 0), (4, 0), (4, 1)]
        )
        packet = make_packet()
        bath = make_bath(1e4)

        checked = 0

        for _ in range(500):
            new_state, event = step(state, bath, packet)
            up = event.geometry == Geometry.HEAD_ON and event.level_in < state.n_levels - 1

            if up and state.occupancy[event.level_in + 1].all():
                self.assertEqual(event.reason, EventReason.PAULI_BLOCKED)
                checked += 1
            state = new_state

        self.assertGreater(checked, 0)

    def test_step_leaves_input_unchanged(self):
        state = EnsembleState.create(n_levels=20, n_electrons=10, upsilon=UPSILON)
        occupancy = state.occupancy.copy()
        step(state, make_bath(300), make_packet())

        np.testing.assert_array_equal(state.occupancy, occupancy)
        self.assertEqual(state.step_count, 0)

    def test_empty_ensemble(self):
        state = EnsembleState.create(n_levels=5, n_electrons=0, upsilon=UPSILON)
        with self.assertRaises(ValueError):
            step(state, make_bath(300), make_packet())

    def test_mismatched_packet_speed(self):
        state = EnsembleState.create(n_levels=5, n_electrons=2, upsilon=UPSILON)
        with self.assertRaises(ValueError):
            step(state, make_bath(300), make_packet(upsilon=2 * UPSILON))


class TestSimulate(TestCase):
    def setUp(self):
        self.state = EnsembleState.create(n_levels=40, n_electrons=16, upsilon=UPSILON, seed=7)
        self.bath = make_bath(300)
        self.packet = make_packet()

    def test_draws_depend_on_step_only(self):
        block = step_draws(11, 0, 50)
        np.testing.assert_array_equal(step_draws(11, 20, 1)[0], block[20])
        np.testing.assert_array_equal(step_draws(11, 20, 30), block[20:])

    def test_matches_single_steps(self):
        record = simulate(self.state, self.bath, self.packet, 200)

        state = self.state
        for index in range(200):
            state, event = step(state, self.bath, self.packet)
            self.assertEqual(record.events.event(index), event)

        np.testing.assert_array_equal(record.final_state.occupancy, state.occupancy)
        self.assertEqual(record.final_state.step_count, 200)

    def test_deterministic(self):
        first = simulate(self.state, self.bath, self.packet, 2000)
        second = simulate(self.state, self.bath, self.packet, 2000)
        other = simulate(self.state, self.bath, self.packet, 2000, seed=8)

        self.assertTrue(first.events.equals(second.events))
        self.assertFalse(first.events.equals(other.events))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2**32))
    def test_particle_conservation(self, seed):
        record = simulate(self.state, self.bath, self.packet, 500, seed=seed)
        final = record.final_state

        self.assertEqual(int(final.occupancy.sum()), 16)
        self.assertEqual(len({tuple(e) for e in final.electrons}), 16)
        for level, spin in final.electrons:
            self.assertTrue(final.occupancy[level, spin])
        self.assertLessEqual(int(final.occupancy.sum(axis=1).max()), 2)

    def test_entropy(self):
        self.assertEqual(entropy(np.array([0.0, 1.0, 1.0])), 0.0)
        self.assertAlmostEqual(entropy(np.array([0.5]), spin_channels=2), 2 * np.log(2))


class TestRelax(TestCase):
    """200 levels, 50 electrons, bath at a tenth of the Fermi temperature.

    The canonical equilibrium of 50 electrons sharing spin-degenerate levels
    fits Fermi-Dirac at T_fit = 0.915 T on this ladder."""

    @classmethod
    def setUpClass(cls):
        cls.state = EnsembleState.create(n_levels=200, n_electrons=50, upsilon=UPSILON, seed=2024)
        epsilon_f = fermi_energy(cls.state.energies, 50, 2)
        cls.temperature = 0.1 * epsilon_f / k_B
        cls.bath = make_bath(cls.temperature)
        cls.packet = make_packet(vbar0=2.0)
        cls.result = relax(cls.state, cls.bath, cls.packet, 2_000_000)

    def test_fitted_temperature(self):
        self.assertLess(abs(self.result.fit.t_fit / self.temperature - 1), 0.15)

    def test_converged_temperature(self):
        self.assertAlmostEqual(self.result.fit.t_fit / self.temperature, 0.915, delta=0.05)

    def test_occupancy_at_mu(self):
        self.assertLess(abs(self.result.fit.occupancy_at_mu - 0.5), 0.05)

    def test_detailed_balance(self):
        link = self.result.busiest_link()
        self.assertGreater(min(link.up_moves, link.down_moves), 500)
        self.assertLess(link.balance_error, 0.10)

    def test_entropy_trend(self):
        trace = self.result.entropy_trace
        edges = self.result.window_edges

        self.assertEqual(edges[-1], 2_000_000)
        self.assertEqual(edges[-2], 1_000_000)
        self.assertLess(trace[0], trace[-1])
        self.assertGreaterEqual(self.result.entropy_trend, -0.05)

    def test_particle_number(self):
        self.assertEqual(int(self.result.final_state.occupancy.sum()), 50)
        self.assertAlmostEqual(self.result.occupancy.sum() * 2, 50)


class TestLinkBalance(TestCase):
    def test_equilibrium_occupancy(self):
        # Fermi-Dirac factors with exp(-Δε/k_B·T) = 0.5 and equal fluxes
        lower, upper = 2 / 3, 0.5
        link = LinkBalance(
            level=0, up_moves=1000, down_moves=1000, occupancy_lower=lower, occupancy_upper=upper, expected=0.5
        )
        self.assertAlmostEqual(link.ratio, 0.5)
        self.assertAlmostEqual(link.balance_error, 0.0)

    def test_flat_occupancy_is_out_of_balance(self):
        link = LinkBalance(
            level=0, up_moves=1000, down_moves=1000, occupancy_lower=0.5, occupancy_upper=0.5, expected=0.5
        )
        self.assertAlmostEqual(link.balance_error, 1.0)

    def test_unused_link(self):
        link = LinkBalance(
            level=0, up_moves=0, down_moves=10, occupancy_lower=0.5, occupancy_upper=0.5, expected=0.5
        )
        self.assertTrue(np.isnan(link.ratio))

        full = LinkBalance(
            level=0, up_moves=3, down_moves=10, occupancy_lower=1.0, occupancy_upper=0.5, expected=0.5
        )
        self.assertTrue(np.isnan(full.ratio))

    def test_counts_from_event_log(self):
        accepted = REASONS.index(EventReason.REBOUND_EXCHANGED)
        blocked = REASONS.index(EventReason.PAULI_BLOCKED)
        log = EventLog(
            level_in=np.array([0, 1, 1, 2, 1, 0]),
            level_out=np.array([1, 0, 2, 1, 1, 1]),
            geometry=np.array([0, 1, 0, 1, 0, 0], dtype=np.int8),
            reason=np.array([accepted, accepted, accepted, accepted, blocked, accepted], dtype=np.int8),
        )
        energies = np.array([1.0, 4.0, 9.0])
        occupancy = np.array([0.8, 0.5, 0.2])

        links = link_balances(energies, occupancy, log, temperature=0.0)
        self.assertEqual([(l.up_moves, l.down_moves) for l in links], [(2, 1), (1, 1)])
        self.assertEqual(links[0].expected, 0.0)

        later = link_balances(energies, occupancy, log, temperature=0.0, start=2)
        self.assertEqual([(l.up_moves, l.down_moves) for l in later], [(1, 0), (1, 1)])


class TestWindows(TestCase):
    def test_edges_double(self):
        edges = window_edges(1024, 4)
        np.testing.assert_array_equal(edges, [0, 128, 256, 512, 1024])

    def test_short_run_edges_increase(self):
        edges = window_edges(20, 10)
        self.assertEqual(edges[0], 0)
        self.assertEqual(edges[-1], 20)
        self.assertTrue(np.all(np.diff(edges) > 0))

    def test_too_short(self):
        with self.assertRaises(ValueError):
            window_edges(19, 10)

    def test_entropy_trend(self):
        self.assertAlmostEqual(entropy_trend(np.array([1.0, 2.0, 4.0, 4.0])), 0.625)
        self.assertAlmostEqual(entropy_trend(np.array([4.0, 4.0, 3.9, 4.1])), 0.0)
        self.assertEqual(entropy_trend(np.array([0.0, 0.0, 1.0, 1.0])), 1.0)
        self.assertEqual(entropy_trend(np.array([1.0, 1.0, 0.0, 0.0])), float("-inf"))

        with self.assertRaises(ValueError):
            entropy_trend(np.array([1.0]))

    def test_relaxation_from_far_above(self):
        state = EnsembleState.create(
            n_levels=120, n_electrons=50, upsilon=UPSILON, seed=5,
            occupied=[(level, spin) for level in range(40, 65) for spin in (0, 1)],
        )
        temperature = 0.1 * fermi_energy(state.energies, 50, 2) / k_B
        record = simulate(state, make_bath(temperature), make_packet(), 30_000)

        self.assertLess(record.final_state.total_energy, state.total_energy)
        self.assertEqual(int(record.final_state.occupancy.sum()), 50)


class TestTrials(TestCase):
    def test_trial_seeds(self):
        seeds = trial_seeds(5, 4)
        self.assertEqual(len(set(seeds)), 4)
        self.assertEqual(seeds, trial_seeds(5, 4))

    def test_run_trials_in_order(self):
        state = EnsembleState.create(n_levels=120, n_electrons=30, upsilon=UPSILON)
        temperature = 0.1 * fermi_energy(state.energies, 30, 2) / k_B
        bath = make_bath(temperature)
        packet = make_packet()

        results = run_trials(state, bath, packet, 20_000, n_trials=2, seed=3, max_workers=1)
        seeds = trial_seeds(3, 2)

        self.assertEqual([r.fit.seed for r in results], seeds)
        single = relax(state, bath, packet, 20_000, seed=seeds[1])
        self.assertTrue(results[1].events.equals(single.events))
